/// One 10 Hz sample of a vehicle, in meters and seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: u32,
    /// Lateral position from the left road edge.
    pub local_x: f64,
    /// Longitudinal position from the entry edge.
    pub local_y: f64,
    pub speed: f64,
    pub accel: f64,
    pub lane_id: u32,
    pub vehicle_length: f64,
    pub vehicle_type: u32,
}

/// Gap-free, frame-sorted samples of one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub vehicle_id: u32,
    pub frames: Vec<Frame>,
}

impl Track {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn lateral(&self) -> impl Iterator<Item = f64> + '_ {
        self.frames.iter().map(|f| f.local_x)
    }

    /// True when frame ids are strictly increasing by one and every
    /// kinematic value is finite.
    pub fn is_contiguous(&self) -> bool {
        self.frames.windows(2).all(|w| w[1].frame_id == w[0].frame_id + 1)
            && self
                .frames
                .iter()
                .all(|f| f.local_x.is_finite() && f.local_y.is_finite() && f.speed.is_finite() && f.accel.is_finite())
    }
}
