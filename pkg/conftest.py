"""
Shared fixtures for the agentkernel test suites
"""

import sys
import threading
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent / 'src'))

import pytest

from agentkernel.sdk.kernel import bootstrap_kernel
from agentkernel.utils.config import build_config


def chat(text="search weather in paris", **params):
    """A chat query as a plain mapping"""
    return {"messages": [{"role": "user", "content": text}], "action_type": "chat", "params": params}


def exact(tokens):
    """Generation parameters fixing the output length"""
    return {"max_new_tokens": tokens, "length_policy": "exact"}


def run_agents(kernel, queries_by_agent):
    """
    Submit each agent's queries on its own thread, deregistering when done

    Agents must already be registered and the kernel started.

    Returns:
        Responses per agent id, in submission order
    """
    responses = {aid: [] for aid in queries_by_agent}
    errors = []

    def body(aid, queries):
        try:
            for query in queries:
                responses[aid].append(kernel.submit(aid, query))
        except BaseException as e:
            errors.append(e)
        finally:
            kernel.deregister_agent(aid)

    threads = [threading.Thread(target=body, args=(aid, qs), daemon=True)
               for aid, qs in queries_by_agent.items()]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join(timeout=30)
    assert not errors, errors
    return responses


@pytest.fixture
def storage_root(tmp_path):
    return tmp_path / "storage"


@pytest.fixture
def make_config(storage_root):
    """Config with a temporary storage root; keyword overrides use dotted keys"""
    def factory(data=None, **overrides):
        flat = {"storage.root": str(storage_root)}
        flat.update({key.replace("__", "."): value for key, value in overrides.items()})
        return build_config(data, flat)
    return factory


@pytest.fixture
def make_kernel(make_config):
    """Bootstrapped (not started) kernels, stopped at teardown if still running"""
    kernels = []

    def factory(data=None, prompt=None, **overrides):
        kernel = bootstrap_kernel(make_config(data, **overrides), prompt=prompt)
        kernels.append(kernel)
        return kernel

    yield factory

    for kernel in kernels:
        if kernel.running:
            kernel.stop()
