"""HTTP server framework and client."""

from .client import (
    HttpError,
    HttpStatusError,
    HttpTimeout,
    Response,
    TooManyRedirects,
    UnsupportedMediaType,
    http_get,
    http_open,
    http_post,
)
from .errors import BadRequest, Forbidden, MethodNotAllowed, Moved, NotFound, ReplyCondition, ServerError
from .params import ParamSpec, http_parameters, param
from .server import CgiOutput, Headers, Request, Server, error_page, serve, session_of
from .session import Session, SessionManager, session_delete, session_get, session_put

__all__ = [
    "HttpError", "HttpStatusError", "HttpTimeout", "Response", "TooManyRedirects",
    "UnsupportedMediaType", "http_get", "http_open", "http_post",
    "BadRequest", "Forbidden", "MethodNotAllowed", "Moved", "NotFound", "ReplyCondition", "ServerError",
    "ParamSpec", "http_parameters", "param",
    "CgiOutput", "Headers", "Request", "Server", "error_page", "serve", "session_of",
    "Session", "SessionManager", "session_delete", "session_get", "session_put",
]
