"""Kernel modules: syscalls, scheduler, LLM core and resource managers"""
