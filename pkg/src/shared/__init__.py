# Shared utilities and models across all microservices