"""Logging and reporting helpers"""
