"""Source code package"""
