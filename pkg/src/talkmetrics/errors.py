"""Shared exception base for the package.

Concrete error types live next to the operations that raise them; they all
derive from :class:`TalkmetricsError` so callers (and the CLI) can catch
package failures with one handler.
"""


class TalkmetricsError(Exception):
    """Base class for every error raised by talkmetrics."""
