"""Tests for traitfusion."""
