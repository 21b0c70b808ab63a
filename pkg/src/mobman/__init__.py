"""mobman: simulation and motion/force control of a manipulator on a moving base.

The package splits into:

* :mod:`mobman.robot`    - serial-arm model, kinematics, coupled task-space dynamics
* :mod:`mobman.filters`  - continuous-to-discrete filter machinery for the estimators
* :mod:`mobman.control`  - the four benchmark controllers and the stability monitor
* :mod:`mobman.world`    - wall contact, joint friction, base trajectories, sensors
* :mod:`mobman.sim`      - fixed-step closed-loop simulation and run records
* :mod:`mobman.bench`    - metrics, the controller-ablation harness
* :mod:`mobman.config`   - declarative scenario configuration (JSON)
* :mod:`mobman.cli`      - command-line entry points
"""

from .robot import (
    BaseState,
    JointState,
    Link,
    Pose,
    RobotModel,
    TaskState,
    Wrench,
    augmented_jacobian,
    coupling_velocity_term,
    coupling_wrench,
    damped_pseudoinverse,
    default_arm,
    forward_kinematics,
    jacobian,
    jacobian_time_derivative,
    joint_space_matrices,
    pendulum,
    planar_arm,
    task_space_matrices,
    task_state,
)

__version__ = "0.1.0"
