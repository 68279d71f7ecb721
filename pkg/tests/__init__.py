"""Test suite for radio-multicast-sim."""
