"""Typed reply conditions raised by handlers."""

from __future__ import annotations

from http import HTTPStatus


class ReplyCondition(Exception):
    """Raise from a handler to send a specific non-200 reply."""

    status = 500

    def __init__(self, detail: str = ""):
        self.detail = detail
        super().__init__(detail)

    @property
    def reason(self) -> str:
        return HTTPStatus(self.status).phrase

    def headers(self) -> list:
        return []

    def message(self) -> str:
        return self.detail


class Forbidden(ReplyCondition):
    status = 403

    def __init__(self, url: str):
        self.url = url
        super().__init__(url)

    def message(self):
        return f"You do not have permission to access {self.url}."


class Moved(ReplyCondition):
    status = 301

    def __init__(self, url: str):
        self.url = url
        super().__init__(url)

    def headers(self):
        return [("Location", self.url)]

    def message(self):
        return f"The document has moved to {self.url}."


class NotFound(ReplyCondition):
    status = 404

    def __init__(self, url: str):
        self.url = url
        super().__init__(url)

    def message(self):
        return f"The requested URL {self.url} was not found on this server."


class ServerError(ReplyCondition):
    status = 500

    def message(self):
        return f"Internal server error: {self.detail}"


class BadRequest(ReplyCondition):
    """400 reply; *parameter* names the offending form field if any."""

    status = 400

    def __init__(self, message: str, parameter: str = None):
        self.parameter = parameter
        super().__init__(message)

    def message(self):
        return self.detail


class MethodNotAllowed(ReplyCondition):
    status = 405

    def __init__(self, method: str, allowed):
        self.allowed = tuple(allowed)
        super().__init__(method)

    def headers(self):
        return [("Allow", ", ".join(self.allowed))]

    def message(self):
        return f"Method {self.detail} is not allowed here."
