"""Test doubles for fuzzing pipelines: a scripted mock fuzzer, a toy
crashing loader target, and a deterministic parser-fixture generator."""
