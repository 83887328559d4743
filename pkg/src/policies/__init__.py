"""Execution policies (base policies, Uniform, callables)"""
