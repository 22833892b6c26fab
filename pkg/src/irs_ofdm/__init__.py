"""IRS-assisted OFDM downlink simulator with a hybrid MDQN-DDPG resource allocator."""

__version__ = "0.1.0"
