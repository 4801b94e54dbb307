"""Link-level simulation of MIMO MC-CDMA with LS/MMSE channel estimation."""

__version__ = "0.1.0"
