use crate::error::{Error, Result};

/// Area, power and instance count of one peripheral or array block, as the
/// module-level aggregate (power of all `count` instances together).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ComponentCost {
    pub area_mm2: f64,
    pub power_mw: f64,
    pub count: u64,
}

impl ComponentCost {
    pub const fn new(area_mm2: f64, power_mw: f64, count: u64) -> Self {
        Self {
            area_mm2,
            power_mw,
            count,
        }
    }

    fn valid(&self) -> bool {
        self.area_mm2 >= 0.0 && self.power_mw >= 0.0 && self.area_mm2.is_finite() && self.power_mw.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct AnalogModuleCosts {
    pub rram_array: ComponentCost,
    pub input_register: ComponentCost,
    pub output_register: ComponentCost,
    pub wl_driver: ComponentCost,
    pub adc: ComponentCost,
    pub shift_add: ComponentCost,
    pub sample_hold: ComponentCost,
}

impl AnalogModuleCosts {
    pub fn components(&self) -> [(&'static str, &ComponentCost); 7] {
        [
            ("rram_array", &self.rram_array),
            ("input_register", &self.input_register),
            ("output_register", &self.output_register),
            ("wl_driver", &self.wl_driver),
            ("adc", &self.adc),
            ("shift_add", &self.shift_add),
            ("sample_hold", &self.sample_hold),
        ]
    }

    pub fn area_mm2(&self) -> f64 {
        self.components().iter().map(|(_, c)| c.area_mm2).sum()
    }

    pub fn power_mw(&self) -> f64 {
        self.components().iter().map(|(_, c)| c.power_mw).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DigitalModuleCosts {
    pub rram_array: ComponentCost,
    pub input_register: ComponentCost,
    pub output_register: ComponentCost,
    pub wl_driver: ComponentCost,
    pub shift_add: ComponentCost,
    pub sample_hold: ComponentCost,
    pub sfu: ComponentCost,
}

impl DigitalModuleCosts {
    pub fn components(&self) -> [(&'static str, &ComponentCost); 7] {
        [
            ("rram_array", &self.rram_array),
            ("input_register", &self.input_register),
            ("output_register", &self.output_register),
            ("wl_driver", &self.wl_driver),
            ("shift_add", &self.shift_add),
            ("sample_hold", &self.sample_hold),
            ("sfu", &self.sfu),
        ]
    }

    pub fn area_mm2(&self) -> f64 {
        self.components().iter().map(|(_, c)| c.area_mm2).sum()
    }

    pub fn power_mw(&self) -> f64 {
        self.components().iter().map(|(_, c)| c.power_mw).sum()
    }

    /// Everything except the SFU, which is charged separately.
    pub fn array_path_power_mw(&self) -> f64 {
        self.power_mw() - self.sfu.power_mw
    }
}

/// Timing and interconnect constants.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct TimingParams {
    pub clock_ghz: f64,
    pub adc_rate_gsps: f64,
    /// Resolution the table's ADC power refers to.
    pub adc_reference_bits: u32,
    /// One input-bit cycle on an analog array (all columns converted).
    pub array_read_ns: f64,
    pub oci_gbps: f64,
    pub pcie_gbps: f64,
    /// Bus cycles to aggregate one set of partial sums from another PU.
    pub aggregation_cycles: u64,
}

/// Sums printed in the source table, kept to check the component rows.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ReportedSums {
    pub analog_area_mm2: f64,
    pub analog_power_mw: f64,
    pub analog_modules_per_pu: u64,
    pub digital_area_mm2: f64,
    pub digital_power_mw: f64,
    pub digital_modules_per_pu: u64,
}

/// Per-component cost table for both module kinds plus timing constants.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ComponentCostTable {
    pub analog: AnalogModuleCosts,
    pub digital: DigitalModuleCosts,
    pub timing: TimingParams,
    pub reported: ReportedSums,
}

impl Default for ComponentCostTable {
    /// The 65 nm configuration.
    fn default() -> Self {
        Self {
            analog: AnalogModuleCosts {
                rram_array: ComponentCost::new(0.048, 60.78, 512),
                input_register: ComponentCost::new(0.00065, 0.13, 512),
                output_register: ComponentCost::new(0.00129, 0.53, 512),
                wl_driver: ComponentCost::new(0.02, 297.71, 64 * 512),
                adc: ComponentCost::new(0.30, 512.00, 512),
                shift_add: ComponentCost::new(0.10, 59.54, 512),
                sample_hold: ComponentCost::new(6e-5, 12e-6, 512),
            },
            digital: DigitalModuleCosts {
                rram_array: ComponentCost::new(2.86, 3890.02, 256),
                input_register: ComponentCost::new(0.0031, 0.76, 256),
                output_register: ComponentCost::new(0.0032, 1.65, 256),
                wl_driver: ComponentCost::new(0.14, 2381.64, 1024 * 256),
                shift_add: ComponentCost::new(0.21, 119.08, 1024),
                sample_hold: ComponentCost::new(13e-5, 23e-6, 1024),
                sfu: ComponentCost::new(4.79, 138.89, 256),
            },
            timing: TimingParams {
                clock_ghz: 1.0,
                adc_rate_gsps: 1.28,
                adc_reference_bits: 7,
                array_read_ns: 100.0,
                oci_gbps: 1000.0,
                pcie_gbps: 128.0,
                aggregation_cycles: 24,
            },
            reported: ReportedSums {
                analog_area_mm2: 0.47,
                analog_power_mw: 930.69,
                analog_modules_per_pu: 24,
                digital_area_mm2: 8.01,
                digital_power_mw: 6532.05,
                digital_modules_per_pu: 8,
            },
        }
    }
}

impl ComponentCostTable {
    pub fn validate(&self) -> Result<()> {
        let all = self
            .analog
            .components()
            .into_iter()
            .chain(self.digital.components())
            .all(|(_, c)| c.valid());
        if !all {
            return Err(Error::invalid("component costs must be finite and non-negative"));
        }
        if self.analog.adc.count == 0 || self.analog.rram_array.count == 0 || self.digital.rram_array.count == 0 {
            return Err(Error::invalid("array and ADC counts must be positive"));
        }
        let t = &self.timing;
        let positive = [t.clock_ghz, t.adc_rate_gsps, t.array_read_ns, t.oci_gbps, t.pcie_gbps];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || t.adc_reference_bits == 0 {
            return Err(Error::invalid("timing parameters must be positive"));
        }
        Ok(())
    }

    /// Energy of one conversion at `bits`: steady-state power of one ADC over
    /// the conversion rate, halved for every bit below the reference
    /// resolution.
    pub fn adc_energy_pj(&self, bits: u32) -> f64 {
        let per_adc_mw = self.analog.adc.power_mw / self.analog.adc.count as f64;
        let reference = per_adc_mw / self.timing.adc_rate_gsps;
        let shift = self.timing.adc_reference_bits as i32 - bits as i32;
        reference * crate::math::powf(2.0, -(shift as f64))
    }

    /// Energy of one input-bit cycle on one analog array, all non-ADC
    /// components: the module's power per array for one array read.
    pub fn array_cycle_energy_pj(&self) -> f64 {
        let non_adc = self.analog.power_mw() - self.analog.adc.power_mw;
        non_adc / self.analog.rram_array.count as f64 * self.timing.array_read_ns
    }

    /// Energy of one clock cycle of one digital module's array path.
    pub fn digital_cycle_energy_pj(&self) -> f64 {
        self.digital.array_path_power_mw() / self.timing.clock_ghz
    }

    pub fn sfu_cycle_energy_pj(&self) -> f64 {
        self.digital.sfu.power_mw / self.timing.clock_ghz
    }

    #[inline]
    pub fn cycle_ns(&self) -> f64 {
        1.0 / self.timing.clock_ghz
    }
}
