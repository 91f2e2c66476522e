__title__ = "radt"
__description__ = "Retrieval-augmented decision transformers for in-context RL"
__version__ = "0.0.1"
