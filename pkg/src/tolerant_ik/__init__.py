"""Real-time inverse kinematics with specific-goal and ranged-goal tasks."""
