"""Configuration models and backtest hooks."""
