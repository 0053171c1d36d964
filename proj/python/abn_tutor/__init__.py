"""Attention branch network tutor: data, model, knowledge embedding, guided inference."""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import TutorService as _TutorService


def request_json(service: _TutorService, method: str, path: str, body=None):
    """Call the tutor API and decode the reply: returns (status, dict)."""
    status, text = service.request(method, path, "" if body is None else _json.dumps(body))
    return status, _json.loads(text)
