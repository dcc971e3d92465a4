# Tests for VariousPlug
