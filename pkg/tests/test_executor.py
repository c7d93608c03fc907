"""Engine embedding: compile/load/instantiate/invoke/interrupt semantics."""

from __future__ import annotations

import random
import struct
import threading
import time
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from limes.artifacts import CompiledArtifact, module_hash
from limes.errors import (
    CorruptArtifact,
    FingerprintMismatch,
    GuestTrap,
    InstanceReused,
    Interrupted,
    LinkError,
    MalformedModule,
    MissingExport,
    NotRunning,
    SandboxError,
)
from limes.executor import (
    EpochConfig,
    Executor,
    FunctionInstance,
    InstanceState,
    SandboxPolicy,
    TimingBreakdown,
)

# Interruption promptness: deadline D is honoured within D + SLACK_MS.
SLACK_MS = 200.0


@pytest.fixture(scope="module")
def executor():
    with Executor() as ex:
        yield ex


@pytest.fixture(scope="module")
def noop_artifact(executor, noop_wasm):
    return executor.compile_module(noop_wasm)


def fresh_instance(executor, wasm, policy=None, epochs=None) -> FunctionInstance:
    return executor.instantiate(executor.load_module(wasm), policy, epochs)


class TestEpochConfig:
    def test_defaults(self):
        cfg = EpochConfig()
        assert cfg.tick_interval_ms == 10.0
        assert cfg.deadline_ticks == 3000
        assert cfg.deadline_ms == 30_000.0

    def test_deadline_is_the_product(self):
        assert EpochConfig(tick_interval_ms=2.5, deadline_ticks=8).deadline_ms == 20.0

    def test_validation(self):
        with pytest.raises(ValueError):
            EpochConfig(tick_interval_ms=0.0)
        with pytest.raises(ValueError):
            EpochConfig(tick_interval_ms=-1.0)
        with pytest.raises(ValueError):
            EpochConfig(deadline_ticks=0)


class TestSandboxPolicy:
    def test_env_entries_must_be_key_value(self):
        with pytest.raises(ValueError):
            SandboxPolicy(env_vars=("NOVALUE",))
        with pytest.raises(ValueError):
            SandboxPolicy(env_vars=("=empty-key",))

    def test_split_env(self):
        policy = SandboxPolicy(env_vars=("A=1", "B=x=y"))
        assert policy.split_env() == [("A", "1"), ("B", "x=y")]

    def test_defaults_are_closed(self):
        policy = SandboxPolicy()
        assert policy.preopen_dir is None
        assert policy.allow_writes is False
        assert policy.stdin_bytes == b""
        assert policy.capture_stdout is False
        assert policy.env_vars == ()


class TestTimingBreakdown:
    def test_rejects_negative_durations(self):
        with pytest.raises(ValueError):
            TimingBreakdown(cold_start_ms=-1.0, execution_ms=0.0, total_ms=0.0, cache_hit=False)

    def test_rejects_total_below_parts(self):
        with pytest.raises(ValueError):
            TimingBreakdown(cold_start_ms=5.0, execution_ms=5.0, total_ms=9.0, cache_hit=False)

    def test_as_dict(self):
        t = TimingBreakdown(cold_start_ms=1.0, execution_ms=2.0, total_ms=3.5, cache_hit=True)
        assert t.as_dict() == {
            "cold_start_ms": 1.0,
            "execution_ms": 2.0,
            "total_ms": 3.5,
            "cache_hit": True,
        }


class TestCompile:
    def test_artifact_fields(self, executor, noop_wasm, noop_artifact):
        assert noop_artifact.source_hash == module_hash(noop_wasm)
        assert noop_artifact.fingerprint == executor.fingerprint
        assert len(noop_artifact.blob) > 0
        assert noop_artifact.created_at.tzinfo is not None

    def test_empty_bytes_malformed(self, executor):
        with pytest.raises(MalformedModule):
            executor.compile_module(b"")

    def test_garbage_malformed(self, executor):
        with pytest.raises(MalformedModule):
            executor.compile_module(b"definitely not webassembly")

    def test_wat_text_malformed(self, executor):
        # The text format is not a binary module.
        with pytest.raises(MalformedModule):
            executor.compile_module(b"(module)")

    def test_truncated_module_malformed(self, executor, noop_wasm):
        with pytest.raises(MalformedModule):
            executor.compile_module(noop_wasm[:20])

    def test_valid_module_without_entrypoints(self, executor, empty_module):
        with pytest.raises(MissingExport) as excinfo:
            executor.compile_module(empty_module)
        message = str(excinfo.value)
        for name in ("memory", "limes_alloc", "run"):
            assert name in message

    def test_validate_accepts_well_formed(self, executor, noop_wasm, empty_module):
        executor.validate(noop_wasm)
        # validation is shape-only: the entrypoint check happens at compile
        executor.validate(empty_module)

    def test_validate_rejects_garbage(self, executor):
        with pytest.raises(MalformedModule):
            executor.validate(b"nope")

    def test_fingerprint_request_match(self, executor, noop_wasm):
        artifact = executor.compile_module(noop_wasm, fingerprint_request=executor.fingerprint)
        assert artifact.fingerprint == executor.fingerprint

    def test_fingerprint_request_mismatch(self, executor, noop_wasm):
        wrong = replace(executor.fingerprint, engine_version="0.0.1")
        with pytest.raises(FingerprintMismatch):
            executor.compile_module(noop_wasm, fingerprint_request=wrong)


class TestLoadArtifact:
    def test_roundtrip_and_cache_flag(self, executor, noop_artifact):
        handle = executor.load_artifact(noop_artifact)
        assert handle.from_cache is True
        assert handle.module_hash == noop_artifact.source_hash
        instance = executor.instantiate(handle)
        output, timing = executor.invoke(instance, b"payload")
        assert output == b"payload"
        assert timing.cache_hit is True

    def test_corrupt_blob(self, executor, noop_artifact):
        mangled = replace(noop_artifact, blob=noop_artifact.blob[: len(noop_artifact.blob) // 2])
        with pytest.raises(CorruptArtifact):
            executor.load_artifact(mangled)

    def test_garbage_blob(self, executor, noop_artifact):
        mangled = replace(noop_artifact, blob=b"\x00" * 256)
        with pytest.raises(CorruptArtifact):
            executor.load_artifact(mangled)

    @pytest.mark.parametrize(
        "field,value",
        [
            ("engine_name", "otherengine"),
            ("engine_version", "0.0.1"),
            ("target_triple", "riscv64gc-unknown-linux-gnu"),
            ("feature_flags", ("totally-different",)),
        ],
    )
    def test_fingerprint_mismatch_each_field(self, executor, noop_artifact, field, value):
        mangled = replace(noop_artifact, fingerprint=replace(noop_artifact.fingerprint, **{field: value}))
        with pytest.raises(FingerprintMismatch):
            executor.load_artifact(mangled)

    def test_fingerprint_checked_before_engine(self, executor, noop_artifact):
        # Mismatched fingerprint AND garbage blob: the fingerprint check
        # must win, proving the blob never reaches the engine.
        mangled = CompiledArtifact(
            source_hash=noop_artifact.source_hash,
            fingerprint=replace(noop_artifact.fingerprint, engine_version="0.0.1"),
            blob=b"garbage that would never deserialize",
        )
        with pytest.raises(FingerprintMismatch):
            executor.load_artifact(mangled)

    def test_explicit_current_fingerprint(self, executor, noop_artifact):
        wrong_current = replace(executor.fingerprint, engine_name="other")
        with pytest.raises(FingerprintMismatch):
            executor.load_artifact(noop_artifact, current=wrong_current)


class TestInstantiate:
    def test_missing_preopen_dir(self, executor, noop_wasm, tmp_path):
        policy = SandboxPolicy(preopen_dir=str(tmp_path / "does-not-exist"))
        handle = executor.load_module(noop_wasm)
        with pytest.raises(SandboxError):
            executor.instantiate(handle, policy)

    def test_preopen_file_not_dir(self, executor, noop_wasm, tmp_path):
        somefile = tmp_path / "afile"
        somefile.write_bytes(b"x")
        handle = executor.load_module(noop_wasm)
        with pytest.raises(SandboxError):
            executor.instantiate(handle, SandboxPolicy(preopen_dir=str(somefile)))

    def test_unresolvable_import(self, executor, badimport_wasm):
        handle = executor.load_module(badimport_wasm)
        with pytest.raises(LinkError):
            executor.instantiate(handle)

    def test_fresh_instance_identity(self, executor, noop_wasm):
        a = fresh_instance(executor, noop_wasm)
        b = fresh_instance(executor, noop_wasm)
        assert a.state is InstanceState.READY
        assert b.state is InstanceState.READY
        assert a.instance_id != b.instance_id
        assert a.module_hash == module_hash(noop_wasm)
        assert 0 < a.ready_at <= b.ready_at


class TestInvoke:
    def test_identity_small(self, executor, noop_wasm):
        instance = fresh_instance(executor, noop_wasm)
        output, timing = executor.invoke(instance, b"hello limes")
        assert output == b"hello limes"
        assert instance.state is InstanceState.FINISHED
        assert timing.cache_hit is False

    def test_identity_empty(self, executor, noop_wasm):
        instance = fresh_instance(executor, noop_wasm)
        output, _ = executor.invoke(instance, b"")
        assert output == b""

    def test_identity_one_mebibyte(self, executor, noop_wasm):
        payload = random.Random(1234).randbytes(1 << 20)
        instance = fresh_instance(executor, noop_wasm)
        output, _ = executor.invoke(instance, payload)
        assert output == payload

    @settings(max_examples=30, deadline=None)
    @given(payload=st.binary(max_size=4096))
    def test_identity_property(self, executor, noop_artifact, payload):
        instance = executor.instantiate(executor.load_artifact(noop_artifact))
        output, _ = executor.invoke(instance, payload)
        assert output == payload

    def test_timing_invariants(self, executor, noop_wasm):
        instance = fresh_instance(executor, noop_wasm)
        _, timing = executor.invoke(instance, b"x" * 1000)
        assert timing.cold_start_ms >= 0.0
        assert timing.execution_ms > 0.0
        assert timing.total_ms + 1e-9 >= timing.cold_start_ms + timing.execution_ms

    def test_trap_fails_instance(self, executor, trap_wasm):
        instance = fresh_instance(executor, trap_wasm)
        with pytest.raises(GuestTrap):
            executor.invoke(instance, b"")
        assert instance.state is InstanceState.FAILED

    def test_stdin_stdout_plumbing(self, executor, stdio_echo_wasm):
        policy = SandboxPolicy(stdin_bytes=b"hello world", capture_stdout=True)
        instance = fresh_instance(executor, stdio_echo_wasm, policy)
        output, _ = executor.invoke(instance, b"")
        assert output == struct.pack("<I", len(b"hello world"))
        assert instance.stdout() == b"hello world\n[echo done]\n"

    def test_empty_stdin(self, executor, stdio_echo_wasm):
        policy = SandboxPolicy(capture_stdout=True)
        instance = fresh_instance(executor, stdio_echo_wasm, policy)
        output, _ = executor.invoke(instance, b"")
        assert output == struct.pack("<I", 0)
        assert instance.stdout() == b"\n[echo done]\n"

    def test_env_vars_accepted(self, executor, noop_wasm):
        policy = SandboxPolicy(env_vars=("LIMES_TEST=1", "OTHER=two"))
        instance = fresh_instance(executor, noop_wasm, policy)
        output, _ = executor.invoke(instance, b"env ok")
        assert output == b"env ok"

    def test_reuse_after_finished(self, executor, noop_wasm):
        instance = fresh_instance(executor, noop_wasm)
        executor.invoke(instance, b"one")
        with pytest.raises(InstanceReused):
            executor.invoke(instance, b"two")
        assert instance.state is InstanceState.FINISHED

    def test_reuse_after_failed(self, executor, trap_wasm):
        instance = fresh_instance(executor, trap_wasm)
        with pytest.raises(GuestTrap):
            executor.invoke(instance, b"")
        with pytest.raises(InstanceReused):
            executor.invoke(instance, b"")
        assert instance.state is InstanceState.FAILED


class TestInterrupt:
    def test_deadline_interrupts_spin(self, executor, spin_wasm):
        epochs = EpochConfig(tick_interval_ms=10.0, deadline_ticks=5)  # 50 ms
        instance = fresh_instance(executor, spin_wasm, epochs=epochs)
        t0 = time.perf_counter()
        with pytest.raises(Interrupted) as excinfo:
            executor.invoke(instance, b"")
        elapsed_ms = (time.perf_counter() - t0) * 1000.0
        assert instance.state is InstanceState.INTERRUPTED
        assert elapsed_ms <= 50.0 + SLACK_MS
        assert elapsed_ms >= 40.0  # cannot fire before the deadline
        timing = excinfo.value.timing
        assert timing is not None
        assert timing.execution_ms <= 50.0 + SLACK_MS

    def test_per_invocation_deadline_override(self, executor, spin_wasm):
        # Instance default is 30 s; the override must win.
        instance = fresh_instance(executor, spin_wasm)
        t0 = time.perf_counter()
        with pytest.raises(Interrupted):
            executor.invoke(instance, b"", deadline_ms=50.0)
        elapsed_ms = (time.perf_counter() - t0) * 1000.0
        assert elapsed_ms <= 50.0 + SLACK_MS

    def test_interrupt_from_another_thread(self, executor, spin_wasm):
        instance = fresh_instance(executor, spin_wasm)
        result: dict = {}

        def runner():
            try:
                executor.invoke(instance, b"")
            except Interrupted as exc:
                result["exc"] = exc
            result["done_at"] = time.perf_counter()

        thread = threading.Thread(target=runner)
        thread.start()
        deadline = time.perf_counter() + 2.0
        while instance.state is not InstanceState.RUNNING and time.perf_counter() < deadline:
            time.sleep(0.001)
        assert instance.state is InstanceState.RUNNING
        time.sleep(0.05)
        interrupted_at = time.perf_counter()
        executor.interrupt(instance)
        thread.join(timeout=5.0)
        assert not thread.is_alive()
        assert "exc" in result, "invoke did not raise Interrupted"
        latency_ms = (result["done_at"] - interrupted_at) * 1000.0
        assert latency_ms <= SLACK_MS + 50.0
        assert instance.state is InstanceState.INTERRUPTED

    def test_interrupt_ready_instance(self, executor, noop_wasm):
        instance = fresh_instance(executor, noop_wasm)
        with pytest.raises(NotRunning):
            executor.interrupt(instance)
        assert instance.state is InstanceState.READY

    def test_interrupt_finished_instance(self, executor, noop_wasm):
        instance = fresh_instance(executor, noop_wasm)
        executor.invoke(instance, b"")
        with pytest.raises(NotRunning):
            executor.interrupt(instance)
        assert instance.state is InstanceState.FINISHED

    def test_manual_interrupt_without_ticker(self, spin_wasm):
        # An untickered engine never notices deadlines on its own, but an
        # explicit interrupt() bumps the epoch and must still land.
        with Executor(enable_ticker=False) as ex:
            instance = fresh_instance(ex, spin_wasm)
            holder: dict = {}

            def runner():
                try:
                    ex.invoke(instance, b"")
                except Interrupted as exc:
                    holder["exc"] = exc

            thread = threading.Thread(target=runner)
            thread.start()
            deadline = time.perf_counter() + 2.0
            while instance.state is not InstanceState.RUNNING and time.perf_counter() < deadline:
                time.sleep(0.001)
            time.sleep(0.02)
            ex.interrupt(instance)
            thread.join(timeout=5.0)
            assert not thread.is_alive()
            assert "exc" in holder
            assert instance.state is InstanceState.INTERRUPTED


class TestMeasureColdStart:
    def test_jit_path(self, executor, noop_wasm):
        instance, cold_ms, cache_hit = executor.measure_cold_start(noop_wasm)
        assert cache_hit is False
        assert cold_ms > 0.0
        assert instance.state is InstanceState.READY
        output, timing = executor.invoke(instance, b"abc")
        assert output == b"abc"
        assert timing.cold_start_ms == cold_ms
        assert timing.cache_hit is False

    def test_cached_path(self, executor, noop_wasm, noop_artifact):
        instance, cold_ms, cache_hit = executor.measure_cold_start(noop_wasm, cache=noop_artifact)
        assert cache_hit is True
        assert cold_ms > 0.0
        _, timing = executor.invoke(instance, b"abc")
        assert timing.cache_hit is True
        assert timing.cold_start_ms == cold_ms

    def test_policy_and_epochs_forwarded(self, executor, spin_wasm):
        epochs = EpochConfig(tick_interval_ms=10.0, deadline_ticks=5)
        instance, _, _ = executor.measure_cold_start(spin_wasm, epochs=epochs)
        with pytest.raises(Interrupted):
            executor.invoke(instance, b"")
        assert instance.state is InstanceState.INTERRUPTED


class TestStateMachine:
    """Randomized call orders never produce an illegal transition."""

    TERMINAL = {InstanceState.FINISHED, InstanceState.INTERRUPTED, InstanceState.FAILED}

    @pytest.mark.parametrize("seed", range(12))
    def test_random_call_orders(self, executor, noop_artifact, trap_wasm, seed):
        rng = random.Random(seed)
        use_trap = rng.random() < 0.5
        if use_trap:
            instance = fresh_instance(executor, trap_wasm)
            expected_terminal = InstanceState.FAILED
        else:
            instance = executor.instantiate(executor.load_artifact(noop_artifact))
            expected_terminal = InstanceState.FINISHED

        model = InstanceState.READY
        for _ in range(rng.randint(2, 6)):
            op = rng.choice(("invoke", "interrupt"))
            if op == "invoke":
                if model is InstanceState.READY:
                    if use_trap:
                        with pytest.raises(GuestTrap):
                            executor.invoke(instance, b"x")
                    else:
                        out, _ = executor.invoke(instance, b"x")
                        assert out == b"x"
                    model = expected_terminal
                else:
                    with pytest.raises(InstanceReused):
                        executor.invoke(instance, b"x")
            else:
                # Single-threaded harness: the instance is never observably
                # Running here, so interrupt must always refuse.
                with pytest.raises(NotRunning):
                    executor.interrupt(instance)
            assert instance.state is model
        assert instance.state in {InstanceState.READY} | self.TERMINAL


class TestUntickedExecutor:
    def test_noop_completes(self, noop_wasm):
        with Executor(enable_ticker=False) as ex:
            instance = fresh_instance(ex, noop_wasm)
            output, timing = ex.invoke(instance, b"quiet engine")
            assert output == b"quiet engine"
            assert timing.execution_ms > 0.0
