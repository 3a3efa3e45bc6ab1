"""Utility modules for agentkernel"""
