"""Bundled example problem documents (see the sibling ``*.problem`` files)."""
