import json
import logging
import os
import re

# Get access to logger
log = logging.getLogger('vglogger')

CONFIG_FILENAME = "verigraph.toml"


def ensure_directory(path):
    """
    If the directory doesn't exist yet, create it.
    """
    try:
        os.makedirs(path)
    except FileExistsError:
        pass


# Grabs the directory holding `verigraph.toml`, searching upward
def config_dir(dirpath=None):
    if dirpath is None:
        dirpath = os.getcwd()
    if os.path.isfile(os.path.join(dirpath, CONFIG_FILENAME)):
        return dirpath
    parentpath = os.path.dirname(dirpath)
    if parentpath == dirpath:
        # cannot ascend higher, no config found
        return None
    return config_dir(dirpath=parentpath)


def write_json(path, data):
    with open(path, "w", encoding="utf-8") as json_file:
        json.dump(data, json_file, indent=2, ensure_ascii=False)
        json_file.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as json_file:
        return json.load(json_file)


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as jsonl_file:
        for row in rows:
            jsonl_file.write(json.dumps(row, ensure_ascii=False) + "\n")


def append_jsonl(path, row):
    with open(path, "a", encoding="utf-8") as jsonl_file:
        jsonl_file.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_jsonl(path):
    rows = []
    with open(path, "r", encoding="utf-8") as jsonl_file:
        for line in jsonl_file:
            if line.strip():
                rows.append(json.loads(line))
    return rows


_PLACEHOLDER = re.compile(r"\{(\w+)\}")


def render_template(template, **values):
    """
    Fill ``{name}`` placeholders. Braces that do not name a supplied value
    (JSON examples, for instance) are left alone.
    """
    def substitute(match):
        name = match.group(1)
        return str(values[name]) if name in values else match.group(0)
    return _PLACEHOLDER.sub(substitute, template)


def extract_json(raw, kind):
    """
    Return the first JSON value of type ``kind`` (list or dict) embedded
    in ``raw``, tolerating prose and code fences around it; None if absent.
    """
    opener = "[" if kind is list else "{"
    decoder = json.JSONDecoder()
    position = raw.find(opener)
    while position != -1:
        try:
            value, _ = decoder.raw_decode(raw, position)
        except (ValueError, RecursionError):
            value = None
        if isinstance(value, kind):
            return value
        position = raw.find(opener, position + 1)
    return None


def first_difference(expected, actual, path="$"):
    """
    Path of the first place two JSON values differ, or None if equal.
    """
    if type(expected) is not type(actual):
        return path
    if isinstance(expected, dict):
        for key in list(expected) + [key for key in actual if key not in expected]:
            if key not in expected or key not in actual:
                return f"{path}.{key}"
            found = first_difference(expected[key], actual[key], f"{path}.{key}")
            if found is not None:
                return found
        return None
    if isinstance(expected, list):
        for index, (left, right) in enumerate(zip(expected, actual)):
            found = first_difference(left, right, f"{path}[{index}]")
            if found is not None:
                return found
        if len(expected) != len(actual):
            return f"{path}[{min(len(expected), len(actual))}]"
        return None
    return None if expected == actual else path
