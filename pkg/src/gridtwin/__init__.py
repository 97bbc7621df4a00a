"""gridtwin: a process-level digital twin of a four-zone electric microgrid
for cybersecurity experimentation."""

__version__ = "0.1.0"
