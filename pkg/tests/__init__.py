"""Pytests folder."""
