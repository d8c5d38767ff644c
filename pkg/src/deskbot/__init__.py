"""deskbot: a deterministic differential-drive control stack and 2D
desk-scale simulator.

The library layers, bottom to top: kinematics (frame mappings, wheel
synthesis/decomposition), odometry (encoder dead reckoning), control
(PID and calibrated segmented control), plant (motor/encoder/world
simulation), autonomy (go-to-pose, occupancy mapping), bus/nodes (the
deterministic pub/sub graph), scenario (configs and the tick scheduler)
and bridge (websocket access for the browser UI).
"""

from .autonomy import (
    GoalSpec,
    GoToPoseParams,
    MappingConfig,
    OccupancyGrid,
    export_map,
    go_to_pose,
    goal_reached,
    grid_update,
    ray_cells,
)
from .bus import (
    Envelope,
    Flag,
    KeyPress,
    LidarScan,
    MapSnapshot,
    NodeError,
    Odom,
    SchemaMismatchError,
    StatusLed,
    TopicRegistry,
    UndeclaredTopicError,
    WheelTarget,
)
from .control import (
    CalibrationError,
    CalibrationTable,
    InvalidTableError,
    PidGains,
    PidState,
    PwmPair,
    SpeedTable,
    calibrate,
    pid_step,
    read_table_csv,
    segmented_lookup,
    write_table_csv,
)
from .kinematics import (
    STRAIGHT_LINE,
    ChassisGeometry,
    IccResult,
    Pose2D,
    Twist2D,
    WheelSpeeds,
    decompose,
    global_to_local,
    icc,
    local_to_global,
    normalize_angle,
    rotation_matrix,
    synthesize,
)
from .odometry import (
    EncoderConfig,
    EncoderSample,
    OdometryState,
    integrate,
    ticks_to_wheel_speed,
)
from .plant import (
    GroundTruth,
    LidarConfig,
    MotorParams,
    Plant,
    World,
    cliff_check,
    lidar_scan,
    motor_step,
    true_pose_step,
    ultrasonic_range,
)
from .scenario import (
    ConfigError,
    ScenarioConfig,
    Simulation,
    TraceRecorder,
    build_simulation,
    bundled_world,
    load_config,
    load_script,
    parse_script,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
