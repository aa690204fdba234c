"""Hybrid OTFS/OFDM frame simulator."""
