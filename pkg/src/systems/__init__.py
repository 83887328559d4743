"""Planner systems (simulation, planning, oracle, noise, generation, evaluation)"""
