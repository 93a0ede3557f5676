"""Writes tiny_backbone.onnx: a small frozen conv feature extractor used to
exercise the ONNX backbone provider in tests. Output layer is named after the
Xception CAM layer so the provider's default layer lookup resolves."""
import torch

torch.manual_seed(7)


class Tiny(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = torch.nn.Conv2d(3, 6, 3, stride=2, padding=1)
        self.conv2 = torch.nn.Conv2d(6, 8, 3, stride=2, padding=1)

    def forward(self, x):
        return torch.relu(self.conv2(torch.relu(self.conv1(x))))


model = Tiny().eval()
torch.onnx.export(model, torch.zeros(1, 3, 32, 32), "tiny_backbone.onnx", opset_version=11,
                  input_names=["input"], output_names=["block14_sepconv2_act"], dynamo=False)
