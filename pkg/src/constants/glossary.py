FEATURE_LABELS = {
    "roll": ("R", "Roll: head rotation about the camera axis, degrees."),
    "pitch": ("P", "Pitch: head rotation about the horizontal axis (nodding), degrees."),
    "yaw": ("Y", "Yaw: head rotation about the vertical axis (turning), degrees."),
    "model_id": ("M", "Face model identifier used by the simulator."),
}

COLUMN_LABELS = {
    "key_point": ("Key point", "1-based key-point label, KP1..KPk."),
    "observations": ("Observations", "Tests in which the key-point was visible."),
    "mae": ("CV MAE", "Mean absolute error of the regression tree under k-fold cross-validation."),
    "size": ("Tree size", "Number of nodes in the tree built on all observations."),
    "leaves": ("Leaves", "Number of leaves (one rule each)."),
    "es": ("ES", "Share of key-points the suite mispredicts with NE >= epsilon."),
    "ms": ("MS", "Per key-point maximum NE reached by the suite."),
    "a12": ("A12", "Probability that a run of the first group beats one of the second; 0.5 is no effect."),
    "mean_ne": ("Mean NE", "Average NE of the observations that fall in the rule's leaf."),
    "support": ("Support", "Training observations in the rule's leaf."),
}

REPLAY_STATUS = {
    True: "pass",
    False: "FAIL",
}
