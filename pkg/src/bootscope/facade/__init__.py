"""User-facing surfaces: command-line interface and the HTTP/event API."""
