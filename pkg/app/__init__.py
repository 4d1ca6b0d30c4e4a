"""ConfKeyBench - N-party conference key agreement simulator"""

__version__ = "0.1.0"
