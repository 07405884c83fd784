"""
Labeled seed derivation. One base seed expands to independent per-component
seeds so that changing one component never shifts another's random stream.
"""

import hashlib


def derive_seed(label: str, base_seed: int) -> int:
    """Stable 32-bit seed from (component label, base seed)."""
    digest = hashlib.md5(f"{label}:{int(base_seed)}".encode("utf-8")).hexdigest()
    return int(digest[:8], 16)


def image_seed(base_seed: int, index: int) -> int:
    """Per-image noise seed; identical for an image wherever it is processed."""
    return derive_seed(f"image-{int(index)}", base_seed)
