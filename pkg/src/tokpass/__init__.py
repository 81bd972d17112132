"""Class-based LM graphs and token-passing beam search for contextual decoding."""

from .arpa import NgramModel, parse_arpa, write_arpa
from .builder import ClassSpec, Speller, build_class_fst, compile_ngram_fst, spell_fst
from .decoder import DecodeConfig, DecodeResult, Hypothesis, Token, beam_search, decode, select_top_n, token_recombine
from .dynamic import DynState, GraphSet, dyn_expand, dyn_final, dyn_start, make_graph_set
from .fst import INF, Arc, Fst, SymbolTable, build_fst, determinize_acyclic, score_sequence
from .scorer import CharNgramScorer, PosteriorScorer, Utterance

__version__ = "0.1.0"
