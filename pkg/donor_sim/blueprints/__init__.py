__all__ = ["commands_bp"]
