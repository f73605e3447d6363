import hashlib
import json
import logging
import math
import os
import re
import threading
from collections import Counter
from dataclasses import dataclass
from enum import Enum

import requests
from tenacity import Retrying, before_sleep_log, retry_if_exception_type, stop_after_attempt, wait_exponential

from . import utils
from .errors import CorpusError, SearchFailed
from .evidence import EvidenceItem, EvidenceSet

log = logging.getLogger('vglogger')

BM25_K1 = 0.9
BM25_B = 0.4

_TOKEN = re.compile(r"[^\W_]+")


class Strategy(str, Enum):
    WIKI = "WIKI"
    WEB = "WEB"


def tokenize(text):
    """
    Lowercase and split on anything that is not a letter or digit.
    No stemming, no stopwords.
    """
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str


class CorpusIndex:
    """
    In-memory inverted index over a paragraph corpus. Immutable once built,
    so any number of threads may search it.
    """

    def __init__(self, documents=()):
        self.documents = {}
        self.postings = {}
        self.doc_len = {}
        for document in documents:
            if document.id in self.documents:
                raise CorpusError(f"duplicate document id `{document.id}`")
            tokens = tokenize(document.text)
            self.documents[document.id] = document
            self.doc_len[document.id] = len(tokens)
            for term, frequency in Counter(tokens).items():
                self.postings.setdefault(term, {})[document.id] = frequency
        self.doc_count = len(self.documents)
        self.avgdl = sum(self.doc_len.values()) / self.doc_count if self.doc_count else 0.0

    def idf(self, term):
        df = len(self.postings.get(term, ()))
        return math.log(1 + (self.doc_count - df + 0.5) / (df + 0.5))


def build_index(corpus_path):
    """
    Read a JSONL corpus, one ``{id, title, text}`` paragraph per line.
    """
    documents = []
    seen = set()
    with open(corpus_path, "r", encoding="utf-8") as corpus_file:
        for line_number, line in enumerate(corpus_file, start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as err:
                raise CorpusError(f"malformed JSON ({err.msg})", line=line_number) from err
            if not isinstance(entry, dict) or "id" not in entry or not isinstance(entry.get("text"), str):
                raise CorpusError("expected an object with `id` and `text`", line=line_number)
            doc_id = str(entry["id"])
            if doc_id in seen:
                raise CorpusError(f"duplicate document id `{doc_id}`", line=line_number)
            seen.add(doc_id)
            documents.append(Document(doc_id, str(entry.get("title", "")), entry["text"]))
    index = CorpusIndex(documents)
    log.info(f"Indexed {index.doc_count} paragraph(s) from `{corpus_path}`.")
    return index


def search_wiki(index, query, k=10, k1=BM25_K1, b=BM25_B):
    terms = list(dict.fromkeys(tokenize(query)))
    if not terms or not index.doc_count:
        return EvidenceSet()
    scores = {}
    for term in terms:
        postings = index.postings.get(term)
        if not postings:
            continue
        idf = index.idf(term)
        for doc_id, frequency in postings.items():
            norm = k1 * (1 - b + b * index.doc_len[doc_id] / index.avgdl)
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * frequency * (k1 + 1) / (frequency + norm)
    ranked = sorted((item for item in scores.items() if item[1] > 0), key=lambda item: (-item[1], item[0]))[:k]
    return EvidenceSet(
        EvidenceItem(source=doc_id, content=index.documents[doc_id].text, score=score, rank=rank)
        for rank, (doc_id, score) in enumerate(ranked, start=1)
    )


def results_to_evidence(results, k):
    """
    Map provider results ``{url, title, snippet}`` to evidence scored 1/rank.
    """
    items = []
    for result in results:
        content = (result.get("snippet") or result.get("title") or "").strip()
        if not content:
            continue
        items.append(EvidenceItem(source=result.get("url") or "", content=content, score=0.0, rank=0))
    deduped = EvidenceSet(items).truncated(k)
    return EvidenceSet(
        EvidenceItem(item.source, item.content, 1.0 / rank, rank)
        for rank, item in enumerate(deduped, start=1)
    )


def fixture_path(directory, query):
    return os.path.join(directory, hashlib.sha256(query.encode("utf-8")).hexdigest() + ".json")


class FixtureSearchClient:
    """
    Offline search: ``<directory>/<sha256(query)>.json`` holds the results.
    Results served can be copied into ``record_dir`` like live ones.
    """

    def __init__(self, directory, record_dir=None):
        self.directory = directory
        self.record_dir = record_dir

    def search(self, query, k):
        path = fixture_path(self.directory, query)
        if not os.path.isfile(path):
            log.warning(f"No search fixture for `{query}`; returning no results.")
            results = []
        else:
            data = utils.read_json(path)
            results = list(data["results"] if isinstance(data, dict) else data)[:k]
        record_results(self.record_dir, query, results)
        return results


def record_results(record_dir, query, results):
    if record_dir is None:
        return
    utils.ensure_directory(record_dir)
    utils.write_json(fixture_path(record_dir, query), {"query": query, "results": results})


def _serper_request(endpoint, api_key, query, k):
    return {"method": "post", "url": endpoint or "https://google.serper.dev/search",
            "json": {"q": query, "num": k},
            "headers": {"X-API-KEY": api_key or "", "Content-Type": "application/json"}}


def _serper_results(data):
    return [{"url": item.get("link", ""), "title": item.get("title", ""), "snippet": item.get("snippet", "")}
            for item in data.get("organic", []) or []]


def _serpapi_request(endpoint, api_key, query, k):
    return {"method": "get", "url": endpoint or "https://serpapi.com/search.json",
            "params": {"engine": "google", "q": query, "num": k, "api_key": api_key or ""}}


def _serpapi_results(data):
    return [{"url": item.get("link", ""), "title": item.get("title", ""), "snippet": item.get("snippet", "")}
            for item in data.get("organic_results", []) or []]


PROVIDERS = {
    "serper": (_serper_request, _serper_results),
    "serpapi": (_serpapi_request, _serpapi_results),
}


class WebSearchClient:
    """
    Live web search over a JSON search API. At most ``max_concurrency``
    requests are in flight; each call keeps its own retry state.
    """

    def __init__(self, provider="serper", endpoint=None, api_key=None, timeout=20.0, retries=2,
                 backoff=1.0, max_concurrency=4, proxy=None, record_dir=None, session=None):
        if provider not in PROVIDERS:
            raise ValueError(f"unknown search provider `{provider}` (choose from {', '.join(PROVIDERS)})")
        self.provider = provider
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.proxies = {"http": proxy, "https": proxy} if proxy else None
        self.record_dir = record_dir
        self.session = session
        self._slots = threading.BoundedSemaphore(max_concurrency)

    def _fetch(self, query, k):
        build_request, _ = PROVIDERS[self.provider]
        call = build_request(self.endpoint, self.api_key, query, k)
        method = getattr(self.session or requests, call.pop("method"))
        response = method(call.pop("url"), timeout=self.timeout, proxies=self.proxies, **call)
        response.raise_for_status()
        return response.json()

    def search(self, query, k):
        retrying = Retrying(
            stop=stop_after_attempt(self.retries + 1),
            wait=wait_exponential(multiplier=self.backoff, max=10),
            retry=retry_if_exception_type(requests.RequestException),
            before_sleep=before_sleep_log(log, logging.WARNING),
            reraise=True,
        )
        with self._slots:
            try:
                data = retrying(self._fetch, query, k)
            except requests.RequestException as err:
                raise SearchFailed(f"{self.provider} search failed after {self.retries} retries: {err}") from err
        _, parse_results = PROVIDERS[self.provider]
        results = parse_results(data)[:k]
        record_results(self.record_dir, query, results)
        return results


def search_web(query, k=10, client=None):
    if client is None:
        raise SearchFailed("no web search client configured")
    return results_to_evidence(client.search(query, k), k)


class WikiRetriever:
    strategy = Strategy.WIKI

    def __init__(self, index, k1=BM25_K1, b=BM25_B):
        self.index = index
        self.k1 = k1
        self.b = b

    def search(self, query, k=10):
        return search_wiki(self.index, query, k=k, k1=self.k1, b=self.b)


class WebRetriever:
    strategy = Strategy.WEB

    def __init__(self, client):
        self.client = client

    def search(self, query, k=10):
        return search_web(query, k=k, client=self.client)
