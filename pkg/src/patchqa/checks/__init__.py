"""Self-check suites: brute-force oracles and finite-difference gradients."""
