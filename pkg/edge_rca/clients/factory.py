import logging

from edge_rca.clients.http_client import HttpModelClient
from edge_rca.clients.mock_client import MockModelClient
from edge_rca.clients.model_client import ModelClient
from edge_rca.clients.replay_client import ReplayModelClient
from edge_rca.utils.config import ClientConfig
from edge_rca.utils.errors import ConfigError

logger = logging.getLogger(__name__)


def make_client(cfg: ClientConfig, offline: bool = False) -> ModelClient:
    """Backend from config; `offline` forces the mock regardless of cfg.backend."""
    backend = "mock" if offline else cfg.backend
    if backend == "mock":
        client = MockModelClient.from_file(cfg.fixtures_path) if cfg.fixtures_path else MockModelClient()
    elif backend == "replay":
        if not cfg.replay_path:
            raise ConfigError("client.replay_path is required for the replay backend")
        client = ReplayModelClient(cfg.replay_path)
    else:
        client = HttpModelClient(cfg)
    logger.info("model client backend: %s", client.provider_tag)
    return client
