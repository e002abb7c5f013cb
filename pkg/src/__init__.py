# src/__init__.py

"""
Pledgepoint Package
====================
Provision point mechanisms for crowdfunding: refund bonuses, prediction-market
securities and referral rewards, with a simulator and an equilibrium oracle.
"""
__version__ = "1.0.0"
