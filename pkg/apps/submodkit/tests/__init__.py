"""Tests for submodkit"""
