"""
bragg_qft - heralded single-photon frequency translation by Bragg scattering.

Modules:
    dispersion     fiber Taylor model, MI / BS phase matching, preset fitting
    quantum_core   two-mode Fock states, BS mode maps, heralded reduction
    bs_translator  coupled-mode transfer functions, acceptance bandwidth
    mi_source      heralded pair source (multimode photon statistics)
    counting       Monte-Carlo pulse trains, g², CAR, efficiency estimators
    config         scenario / fiber preset files
    scenarios      config -> calibrated experiment
    cli            `python -m bragg_qft ...`
"""

__version__ = "0.1.0"
