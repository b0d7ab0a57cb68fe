{
    'name': 'optomech_bec',
    'version': '1.0.0',
    'category': 'Scientific/Quantum Optics',
    'summary': 'Mean-field dynamics, multistability and stationary fluctuations of a membrane-in-the-middle cavity with a BEC',
    'description': '''
        Optomechanical Cavity + BEC Simulator
        =====================================

        Features:
        - Full and adiabatic mean-field trajectories (fixed-step RK4)
        - Exhaustive steady-state search with Routh-Hurwitz stability
        - Stationary covariance from the Lyapunov equation
        - Quadrature squeezing (dB) and logarithmic negativity
        - Squeezed-vacuum injection, standard and same-sign noise conventions
        - Deterministic CSV/JSON artifacts with a run manifest
    ''',
    'license': 'LGPL-3',
    'external_dependencies': {
        'python': [
            'numpy',
            'scipy',
            'python-dotenv',
        ],
    },
    'data': [
        'data/reference_params.json',
    ],
}
