# Zef payments
