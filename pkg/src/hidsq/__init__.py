"""Host intrusion detection experiments on syscall traces, with data-quality measurement."""

__version__ = "0.1.0"
