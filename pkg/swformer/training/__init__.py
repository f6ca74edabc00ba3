"""Training, evaluation and ablation harnesses."""
