"""Unit tests for submodkit"""
