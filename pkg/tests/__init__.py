# Tests for xmaps-depth
