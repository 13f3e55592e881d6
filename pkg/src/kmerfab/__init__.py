"""kmerfab: reference-free somatic k-mer candidate pipeline with a simulated
disaggregated storage fabric and an allocation-strategy orchestrator."""

__version__ = "0.1.0"
