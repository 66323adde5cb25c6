"""Fehlerklassen des Projekts inklusive der Exit-Codes für die Kommandozeile."""

from __future__ import annotations


class ConfigError(ValueError):
    """Ungültige oder unbekannte Konfiguration (Exit-Code 2)."""

    exit_code = 2


class ManifestError(ValueError):
    """Manifest konnte nicht gelesen werden, z.B. unbekanntes Geräte-Token."""

    exit_code = 2


class DimensionError(ValueError):
    """Tensor-Formen passen nicht zusammen."""

    exit_code = 1


class ArgumentError(ValueError):
    """Numerisches Argument ausserhalb des erlaubten Bereichs."""

    exit_code = 1


class TooShortError(ArgumentError):
    """Signal ist kürzer als ein Analysefenster."""


class FormatError(ValueError):
    """Datei ist beschädigt oder hat ein unbekanntes Format."""

    exit_code = 3

    def __init__(self, message: str, offset: int | None = None) -> None:
        if offset is not None:
            message = f"{message} (Offset {offset})"
        super().__init__(message)
        self.offset = offset


class DataIOError(OSError):
    """Eingabedatei fehlt oder ist nicht lesbar."""

    exit_code = 3


class NumericalError(RuntimeError):
    """Nicht-endliche Werte im Vorwärts-/Rückwärtsdurchlauf oder Optimierer."""

    exit_code = 4


def exit_code_for(exc: BaseException) -> int:
    """Liefert den Exit-Code, den die CLI für eine Ausnahme zurückgibt."""
    code = getattr(exc, "exit_code", None)
    if code is not None:
        return int(code)
    if isinstance(exc, OSError):
        return 3
    return 1
