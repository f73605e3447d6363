class VerigraphError(Exception):
    """
    Root of every error raised on purpose by verigraph.
    """


# graph-core
class UnknownNode(VerigraphError):
    def __init__(self, node_id):
        super().__init__(f"unknown node `{node_id}`")
        self.node_id = node_id


class NotReady(VerigraphError):
    def __init__(self, node_id, pending):
        super().__init__(f"node `{node_id}` has unfinished dependencies: {', '.join(pending)}")
        self.node_id = node_id
        self.pending = list(pending)


class IllegalTransition(VerigraphError):
    def __init__(self, node_id, old, new):
        super().__init__(f"node `{node_id}` cannot move from {old.value} to {new.value}")


class BudgetExhausted(VerigraphError):
    def __init__(self, count, budget):
        super().__init__(f"modification budget exhausted ({count}/{budget})")
        self.count = count
        self.budget = budget


class GraftRejected(VerigraphError):
    pass


# planner
class PlannerUnavailable(VerigraphError):
    pass


# retrieval / node-ops
class SearchFailed(VerigraphError):
    pass


class RefinePrecondition(VerigraphError):
    pass


class CorpusError(VerigraphError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


# gateway
class GatewayError(VerigraphError):
    pass


class ScriptMiss(VerigraphError):
    # Not a GatewayError: a miss means the script is wrong, not the node.
    def __init__(self, role, digest):
        super().__init__(f"no scripted response for role {role} (digest {digest})")
        self.role = role
        self.digest = digest


# eval-harness
class DatasetError(VerigraphError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


# cli
class ConfigError(VerigraphError):
    pass
