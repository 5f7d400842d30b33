"""
daverpg command-line client
"""
