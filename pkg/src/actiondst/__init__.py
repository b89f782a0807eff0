"""Dialogue state tracking by scoring dynamically generated update actions."""

__version__ = "0.1.0"

from .actions import CandidateInput, InformGoal, Request, candidate_actions, render_candidates
from .ontology import Ontology, Venue, VenueDb, load_default_domain, load_ontology, load_venues, query_venues
from .scorer import ModelScorer, OracleScorer, RelevanceModel, ScorerInput, TrainingExample, train
from .state import DialogueState, new_state
from .updater import detect, select, update_turn

__all__ = [
    "CandidateInput",
    "DialogueState",
    "InformGoal",
    "ModelScorer",
    "Ontology",
    "OracleScorer",
    "RelevanceModel",
    "Request",
    "ScorerInput",
    "TrainingExample",
    "Venue",
    "VenueDb",
    "candidate_actions",
    "detect",
    "load_default_domain",
    "load_ontology",
    "load_venues",
    "new_state",
    "query_venues",
    "render_candidates",
    "select",
    "train",
    "update_turn",
]
