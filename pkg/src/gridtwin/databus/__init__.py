from .broker import Broker, BrokerStats, BusError, DEFAULT_PORT, MAX_PAYLOAD
from .client import LocalBusClient, MqttClient
from .topics import TopicError, filter_is_valid, topic_matches, validate_publish_topic

__all__ = [
    "Broker",
    "BrokerStats",
    "BusError",
    "DEFAULT_PORT",
    "MAX_PAYLOAD",
    "LocalBusClient",
    "MqttClient",
    "TopicError",
    "filter_is_valid",
    "topic_matches",
    "validate_publish_topic",
]
