"""Causal knowledge graph construction and grounded RAG chat for AMD literature.

Pipeline stages: extract causal relations from abstracts with an LLM, refine
and normalize them, load them into a provenance-carrying RDF graph, index the
graph for cosine-similarity retrieval, and serve a streaming chat that answers
questions grounded in retrieved relations with clickable trial citations.
"""

__version__ = "0.1.0"
