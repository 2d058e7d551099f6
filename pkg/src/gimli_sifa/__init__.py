"""Gimli-Cipher AEAD with fault injection and statistical ineffective fault analysis."""

from .aead import Key, Nonce, aead_decrypt, aead_encrypt
from .permutation import GimliState, permute, permute_hooked

__all__ = ["Key", "Nonce", "GimliState", "aead_encrypt", "aead_decrypt", "permute", "permute_hooked"]
