"""
Application-layer SDK

Agents build Query objects and hand them to a Kernel obtained from
``agentkernel.sdk.kernel.bootstrap_kernel``.
"""
