"""Test suite for AI Code Review System"""
