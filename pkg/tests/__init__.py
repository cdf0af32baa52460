"""Tests for ccikit."""
