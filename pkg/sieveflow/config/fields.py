# sieveflow/config/fields.py
from enum import Enum
from typing import Any, Callable, ClassVar, Final, Generic, Iterator, Mapping, Sequence, TypeVar

from ..core.errors import ConfigurationError

T = TypeVar("T")


class ConfigField(Generic[T]):
    """One ``key = value`` entry of a config section.

    Declared as a class attribute of a ConfigSection, like a register in a
    register map. Text values go through ``parser`` and then ``validator``;
    ``render`` turns the stored value back into text for the resolved file.

    Args:
        default: Value used when the key is absent.
        parser: Converts the text of the value.
        validator: Returns an error message for a bad value, None if it is fine.
        render: Converts a value back to text.
        doc: One line description written above the key in the resolved file.
        hashed: Whether the key enters the config hash.
    """

    def __init__(self,
                 default: T,
                 parser: Callable[[str], T] = str,
                 validator: Callable[[T], str | None] | None = None,
                 render: Callable[[T], str] = str,
                 doc: str = "",
                 hashed: bool = True):
        self.default = default
        self.parser = parser
        self.validator = validator
        self.render = render
        self.doc = doc
        self.hashed = hashed
        self._name = "?"
        self._owner: type | None = None

    def __set_name__(self, owner, name: str):
        self._name = name
        self._owner = owner

    @property
    def name(self) -> str:
        return self._name

    @property
    def qualified_name(self) -> str:
        section = getattr(self._owner, "NAME", "?")
        return f"[{section}] {self._name}"

    def __get__(self, instance, owner=None):
        if instance is None:
            return self
        return instance._values.get(self._name, self.default)

    def __set__(self, instance, value: Any):
        if isinstance(value, str):
            try:
                value = self.parser(value.strip())
            except (TypeError, ValueError) as e:
                raise ConfigurationError(f"{self.qualified_name}: cannot parse {value!r}: {e}") from e
        if self.validator is not None and (problem := self.validator(value)) is not None:
            raise ConfigurationError(f"{self.qualified_name} = {value!r}: {problem}")
        instance._values[self._name] = value


class ConfigSection:
    """A group of ConfigFields read from one ``[NAME]`` section."""
    NAME: ClassVar[str] = ""

    def __init__(self, values: Mapping[str, Any] | None = None):
        self._values: dict[str, Any] = {}
        for key, value in (values or {}).items():
            if key not in self.field_names():
                raise ConfigurationError(
                    f"unknown key '{key}' in section [{self.NAME}]; expected one of {list(self.field_names())}")
            setattr(self, key, value)

    @classmethod
    def fields(cls) -> Iterator[ConfigField]:
        """Fields in declaration order."""
        for klass in reversed(cls.__mro__):
            for attr in vars(klass).values():
                if isinstance(attr, ConfigField):
                    yield attr

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in cls.fields())

    def items(self) -> Iterator[tuple[str, Any]]:
        for f in self.fields():
            yield f.name, getattr(self, f.name)

    def render(self, hashed_only: bool = False) -> str:
        lines = [f"[{self.NAME}]"]
        for f in self.fields():
            if hashed_only and not f.hashed:
                continue
            if f.doc:
                lines.append(f"# {f.doc}")
            lines.append(f"{f.name} = {f.render(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


# Parsers, validators and renderers shared by the sections.

TRUE_WORDS: Final[frozenset[str]] = frozenset({"1", "true", "yes", "on"})
FALSE_WORDS: Final[frozenset[str]] = frozenset({"0", "false", "no", "off"})


def parse_bool(text: str) -> bool:
    word = text.lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    raise ValueError(f"expected one of {sorted(TRUE_WORDS | FALSE_WORDS)}")


def render_bool(value: bool) -> str:
    return "true" if value else "false"


def parse_floats(text: str) -> tuple[float, ...]:
    """Comma separated floats; an empty value is the empty tuple."""
    return tuple(float(x) for x in text.split(",") if x.strip())


def render_floats(values: Sequence[float]) -> str:
    return ",".join(repr(float(v)) for v in values)


def parse_points(text: str) -> tuple[tuple[float, ...], ...]:
    """Points separated by ``;``, coordinates by ``,``."""
    return tuple(parse_floats(chunk) for chunk in text.split(";") if chunk.strip())


def render_points(points: Sequence[Sequence[float]]) -> str:
    return "; ".join(render_floats(p) for p in points)


def parse_optional_float(text: str) -> float | None:
    return None if text.lower() in ("", "auto", "none") else float(text)


def render_optional(value: Any) -> str:
    return "auto" if value is None else repr(value) if isinstance(value, float) else str(value)


def render_float(value: float) -> str:
    return repr(float(value))


def enum_parser(enum_cls: type[Enum]) -> Callable[[str], Enum]:
    def parse(text: str) -> Enum:
        try:
            return enum_cls(text.lower())
        except ValueError:
            raise ValueError(f"expected one of {[m.value for m in enum_cls]}") from None
    return parse


def render_enum(value: Enum) -> str:
    return str(value.value)


def positive(value: float | None) -> str | None:
    return None if value is None or value > 0 else "must be positive"


def non_negative(value: float) -> str | None:
    return None if value >= 0 else "must not be negative"


def at_least(bound: float) -> Callable[[float], str | None]:
    def check(value: float) -> str | None:
        return None if value >= bound else f"must be at least {bound:g}"
    return check


def one_of(*choices: Any) -> Callable[[Any], str | None]:
    def check(value: Any) -> str | None:
        return None if value in choices else f"must be one of {list(choices)}"
    return check
