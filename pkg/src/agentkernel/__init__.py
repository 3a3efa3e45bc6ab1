"""
agentkernel - an agent-serving kernel

Decomposes agent queries into schedulable system calls, runs them against
resource managers (LLM core, memory, storage, tools, access control) with
preemptive scheduling and context snapshot/restore, and ships a
benchmark harness that measures everything in deterministic model time.
"""

__version__ = "0.1.0"
__author__ = "Magnus Overli"
__license__ = "MIT"
