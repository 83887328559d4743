"""Core workflow model, execution engine, and closed-loop executor"""
