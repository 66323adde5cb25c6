"""Service layer: experiment workflows shared by the CLI and the report service."""
