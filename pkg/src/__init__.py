"""CattleAct - joint action/interaction latent space for cattle behavior recognition"""
__version__ = "0.3.0"
