use super::{SourceSlot, TaskSlot, ToolDescriptor, ToolKind};
use crate::domain::{SourceChoice, TaskKind};

/// The shipped tool table. Every entry points at a mock; swap endpoints in a
/// registry file to reach real services.
pub fn default_descriptors() -> Vec<ToolDescriptor> {
    use SourceChoice::{Closed, Open};
    use TaskKind::*;

    let prompt = |id: &str, task: TaskSlot| ToolDescriptor::mock(id, ToolKind::PromptTool, task, SourceSlot::Any);
    let gen = |id: &str, task: TaskKind, source: SourceChoice| {
        ToolDescriptor::mock(id, ToolKind::GenTool, TaskSlot::Task(task), SourceSlot::Source(source))
    };
    let eval = |id: &str, task: TaskKind| {
        ToolDescriptor::mock(id, ToolKind::EvalTool, TaskSlot::Task(task), SourceSlot::Any)
    };

    vec![
        prompt("prompt-enhancer", TaskSlot::Task(T2I)),
        prompt("prompt-enhancer-img2img-edit", TaskSlot::Task(I2I)),
        prompt("qwen3-vl-prompt", TaskSlot::Any),
        gen("qwen-image", T2I, Open),
        gen("seeddream4", T2I, Closed),
        gen("qwen-edit", I2I, Open),
        gen("nanobanana", I2I, Closed),
        gen("hunyuanvideo", T2V, Open),
        gen("sora", T2V, Closed),
        gen("hunyuan-i2v", I2V, Open),
        gen("sora2", I2V, Closed),
        gen("ditto", V2V, Open),
        gen("gen4", V2V, Closed),
        eval("lmm4lmm", T2I),
        eval("lmm4edit", I2I),
        eval("love", T2V),
        eval("vbench-i2v", I2V),
        eval("tdve-assessor", V2V),
        ToolDescriptor::mock("qwen3-vl", ToolKind::MllmTool, TaskSlot::Any, SourceSlot::Any)
            .with_param("vqa_weight", 0.6)
            .with_param("match_weight", 0.4),
    ]
}
