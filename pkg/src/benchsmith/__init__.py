"""benchsmith: build data-grounded research benchmarks from papers and code
repositories, then run and score LLM agents against them."""

__version__ = "0.1.0"
