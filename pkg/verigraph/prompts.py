import logging
import os
import threading

from . import static, utils
from .errors import ConfigError

log = logging.getLogger('vglogger')


class PromptTemplates:
    """
    Prompt templates read from a directory of ``<name>.txt`` files with
    ``{placeholder}`` fields. Defaults to the templates bundled in static/.
    """

    def __init__(self, directory=None):
        if directory is None:
            directory = static.filepath("prompts")
        self.directory = directory
        self._cache = {}
        self._lock = threading.Lock()

    def get(self, name):
        with self._lock:
            if name not in self._cache:
                path = os.path.join(self.directory, f"{name}.txt")
                try:
                    with open(path, "r", encoding="utf-8") as template_file:
                        self._cache[name] = template_file.read()
                except OSError as err:
                    raise ConfigError(f"prompt template `{name}` not readable in `{self.directory}`: {err}") from err
            return self._cache[name]

    def render(self, name, **values):
        return utils.render_template(self.get(name), **values)


_default = None


def default_templates():
    global _default
    if _default is None:
        _default = PromptTemplates()
    return _default
