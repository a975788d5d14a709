# Tests for LangGraph Research Assistant
