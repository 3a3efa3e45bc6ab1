"""Benchmark harness: synthetic workloads, baseline runner, metrics and reports"""
