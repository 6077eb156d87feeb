"""Exception hierarchy.

``ValidationError`` subclasses signal bad configuration or arguments,
``DataError`` subclasses signal malformed or inconsistent input files. The
CLI maps them to exit codes 1 and 2.
"""

from __future__ import annotations


class DecensorError(Exception):
    pass


class ValidationError(DecensorError, ValueError):
    pass


class DataError(DecensorError):
    pass


class InvalidSpec(ValidationError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid synthetic spec: " + "; ".join(self.problems))


class InvalidConfig(ValidationError):
    pass


class ParseError(DataError):
    def __init__(self, path, line: int, reason: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {reason}")


class DanglingParent(DataError):
    def __init__(self, doc_id: str, parent_id: str | None = None):
        self.doc_id = doc_id
        self.parent_id = parent_id
        super().__init__(f"comment {doc_id!r} references missing post {parent_id!r}")


class DuplicateId(DataError):
    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        super().__init__(f"duplicate document id {doc_id!r}")


class UnknownDocument(DataError):
    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        super().__init__(f"annotation references unknown document {doc_id!r}")


class NameNotFound(DataError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"{name!r} does not occur in any post snippet")


class FairnessViolation(DataError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"true name {name!r} does not occur in the scoped comments")


class InsufficientExamples(DecensorError):
    """Raised only when a caller asks for strict checking; normally a flag."""

    def __init__(self, candidate: str, count: int, minimum: int):
        self.candidate = candidate
        self.count = count
        self.minimum = minimum
        super().__init__(f"{candidate!r}: {count} training snippets, need {minimum}")


class EmptyTrainingSet(ValidationError):
    pass


class MissingAnswer(DataError):
    def __init__(self, post_id: str):
        self.post_id = post_id
        super().__init__(f"no answer recorded for censored post {post_id!r}")
