"""
Coin cryptography: pairing group, public parameters, threshold blind
credentials, range proofs, and the opaque/transparent coin bundles.

Import from the submodules; coins.opaque and coins.transparent depend on
core, which itself depends on coins.coconut.
"""
