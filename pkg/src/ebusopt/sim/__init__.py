from .netgen import generate_synthetic_network, generate_tiny_network, price_profiles

__all__ = [
    "generate_synthetic_network",
    "generate_tiny_network",
    "price_profiles",
]
