# fmt: off
__version__ = '0.1.0'
