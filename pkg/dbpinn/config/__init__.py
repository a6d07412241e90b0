"""Experiment configuration and runtime settings"""
